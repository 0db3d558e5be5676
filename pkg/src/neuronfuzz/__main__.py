import sys

from neuronfuzz.cli import main

sys.exit(main())
