from gradepi.cli import main
import sys
sys.exit(main())
