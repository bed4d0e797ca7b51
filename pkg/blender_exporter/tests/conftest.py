import sys
from pathlib import Path

# export.py is a Blender script, not an installed package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
