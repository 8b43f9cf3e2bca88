import requests

print(requests.__name__)
if (n := 3) > 1:
    pass
