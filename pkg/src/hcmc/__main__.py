from hcmc.cli import main

main()
