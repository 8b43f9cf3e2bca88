import matplotlib

print(matplotlib.__name__)
