import sys

from densecsp.cli import main

sys.exit(main())
