from symbound.cli import main
import sys

sys.exit(main())
