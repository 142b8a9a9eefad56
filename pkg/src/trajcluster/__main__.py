import sys

from trajcluster.cli import main

sys.exit(main())
