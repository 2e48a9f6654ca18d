# Make utils directory a Python package
