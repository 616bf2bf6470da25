import sys

from qiparg.cli import main

sys.exit(main())
