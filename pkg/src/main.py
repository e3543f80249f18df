"""
titleskills - job title normalization with a title/skills dual encoder
Main entry point (python -m src.main)
"""
from src.cli import cli


def main():
    """Main application entry point"""
    cli(prog_name='titleskills', obj={})


if __name__ == '__main__':
    main()
