import sys

from patrolroute.cli import main

sys.exit(main())
