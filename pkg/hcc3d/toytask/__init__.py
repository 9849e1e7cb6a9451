"""A desk-scale shape-classification task exercising the compression module."""
