import sys

from mezo.cli import main

sys.exit(main())
