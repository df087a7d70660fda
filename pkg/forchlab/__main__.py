from . import cli

if __name__ == '__main__':
    # python -m forchlab init-db, python -m forchlab run configs/minimal.yaml, see README
    cli(prog_name='python -m forchlab')
