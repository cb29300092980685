"""
Result-dict services shared by the API and the command line.
"""
