import sys

from naca.harness.cli import main

sys.exit(main())
