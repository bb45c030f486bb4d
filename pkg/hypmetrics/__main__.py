import sys

from hypmetrics.app.cli import main

sys.exit(main())
