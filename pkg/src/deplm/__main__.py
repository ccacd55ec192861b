import sys

from deplm.harness.cli import main

sys.exit(main())
