"""Router-state estimate for inter- vs intra-domain multicast mobility."""
import itertools

from mmsim.metrics import state_count_estimate

VALUES = (1, 2, 5, 10)

print("x,y,l,inter,intra")
for x, y, l in itertools.product(VALUES, repeat=3):
    print(f"{x},{y},{l},{state_count_estimate(x, y, l, 'inter'):g},{state_count_estimate(x, y, l, 'intra'):g}")
