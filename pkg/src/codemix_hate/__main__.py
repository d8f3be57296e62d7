import sys

from codemix_hate.cli import main

sys.exit(main())
