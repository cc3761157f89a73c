import sys
from doorpass_lab.cli.interface import main

if __name__ == "__main__":
    sys.exit(main())
