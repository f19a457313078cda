import pandas as pd
from sklearn.impute import SimpleImputer

df = pd.read_csv("impute_input.csv")

imp = SimpleImputer(strategy="mean")
imp_array = imp.fit_transform(df)

print(imp_array[:, 1])
