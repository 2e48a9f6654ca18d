# Make models directory a Python package
