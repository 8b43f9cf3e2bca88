import sklearn
import numpy

print(sklearn.__name__)
