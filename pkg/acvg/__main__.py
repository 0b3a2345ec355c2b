from acvg.cli import run

run()
