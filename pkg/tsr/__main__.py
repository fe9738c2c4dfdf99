from tsr.cli import main

main()
