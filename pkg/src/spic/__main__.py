import sys

from spic.cli import main

sys.exit(main())
