import sys

from acvbench.cli import main

sys.exit(main())
