"""Allow ``python -m ineeg``."""

import sys

from .cli import main

sys.exit(main())
