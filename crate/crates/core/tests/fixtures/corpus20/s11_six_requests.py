import six
import requests

print(six.__name__)
