import os
import sys

# let the suite run from a checkout without an editable install
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))
