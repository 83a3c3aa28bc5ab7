import sys

from cropsig.cli import main

sys.exit(main())
