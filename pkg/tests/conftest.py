import sys
from pathlib import Path

DATA = Path(__file__).parent / "data"

# exact SI values, typed in rather than imported, so oracles stay independent
K_B = 1.380649e-23
CS_MASS = 2.20694695e-25
