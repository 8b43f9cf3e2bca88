import numpy
import pandas

print(numpy.__name__)
