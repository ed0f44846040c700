# coding=utf-8
"""python -m mstgcn"""

# Licence: BSD 3 clause

import sys

# importing the package applies MSTGCN_THREADS before numpy loads
from mstgcn.cli import main

if __name__ == '__main__':
    sys.exit(main())
