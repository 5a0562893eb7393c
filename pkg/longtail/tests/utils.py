import os

DATA_FOLDER = os.path.realpath(os.path.join(__file__, os.pardir, "data"))

TOY_CSV = os.path.join(DATA_FOLDER, "toy.csv")
