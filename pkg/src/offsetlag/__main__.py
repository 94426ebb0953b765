import sys

from offsetlag.cli import main

sys.exit(main())
