import sys

from tof_mcl import cli

sys.exit(cli.main())
