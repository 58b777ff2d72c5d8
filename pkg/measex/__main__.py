import sys

from measex.cli import main

sys.exit(main())
