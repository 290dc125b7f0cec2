import sys

from kinoloco.cli import main

sys.exit(main())
