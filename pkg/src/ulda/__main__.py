import sys

from ulda.cli import main

sys.exit(main())
