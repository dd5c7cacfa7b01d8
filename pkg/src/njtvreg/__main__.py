#!/usr/bin/env python3
"""This is what happens when you do `python -m njtvreg`."""

from njtvreg.run.njtv import main

if __name__ == "__main__":
    main()
