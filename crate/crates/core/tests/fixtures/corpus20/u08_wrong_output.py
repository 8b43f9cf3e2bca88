import scipy
import numpy

print(scipy.__name__)
