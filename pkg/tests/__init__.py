# tests/__init__.py
# bme-spot test suite
