import sys

from niftrace.cli import main

sys.exit(main())
