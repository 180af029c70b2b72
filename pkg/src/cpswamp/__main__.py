import sys

from cpswamp.cli import main

sys.exit(main())
