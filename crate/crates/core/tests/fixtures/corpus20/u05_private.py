import acme_internal_sdk
import requests

print(acme_internal_sdk.VERSION)
