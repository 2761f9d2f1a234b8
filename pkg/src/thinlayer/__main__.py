import sys

from thinlayer.cli import main

sys.exit(main())
