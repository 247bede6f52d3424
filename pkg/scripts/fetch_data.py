"""Check for the application datasets and explain where to obtain them.

The data are not redistributed with this repository.  Each file must be a
CSV with a header row matching the descriptor in ``data/schemas``:

    flea.csv     the flea beetle data (R: tourr::flea or GGally::flea)
    bigmac.csv   the 1991 Big Mac city data (Cook and Weisberg's Arc collection)
    fishing.csv  the fishing data (R: COUNT::fishing)

Usage: python scripts/fetch_data.py [DATA_DIR]
"""

import json
import sys
from pathlib import Path


def main(argv=None):
    root = Path(__file__).resolve().parent.parent
    data_dir = Path(argv[0]) if argv else root / "data"
    status = 0
    for schema in sorted((root / "data" / "schemas").glob("*.json")):
        desc = json.loads(schema.read_text())
        path = data_dir / desc["file"]
        if path.is_file():
            print(f"{desc['name']:8s} found    {path}")
        else:
            status = 1
            cols = ", ".join(desc["columns"])
            print(f"{desc['name']:8s} missing  {path}\n         expected columns: {cols}")
    return status


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
