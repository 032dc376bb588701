import sys

from fedda.cli import main

sys.exit(main())
