# Make services directory a Python package
