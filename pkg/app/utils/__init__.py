# app/utils/__init__.py
# Generic helpers: file IO and ordered parallel execution.
