import sys

sys.path.append("src")

from v2i_chanpred.cli import main

if __name__ == "__main__":
    sys.exit(main())
