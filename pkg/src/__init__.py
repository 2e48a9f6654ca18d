# Make src directory a Python package
__version__ = "1.0.0"
