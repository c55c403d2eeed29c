"""Package metadata"""
## version has to be single line at the last line using single quote
__version__ = '0.2.0'
