import sys

from trimer.cli import main

sys.exit(main())
