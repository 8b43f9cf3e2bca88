import six

print '%s' % six.__name__
