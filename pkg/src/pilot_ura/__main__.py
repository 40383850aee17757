import sys

from pilot_ura.cli import main

sys.exit(main())
