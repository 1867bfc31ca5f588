import sys

from fuelmap.cli import main

sys.exit(main())
