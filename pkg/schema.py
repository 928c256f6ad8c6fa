"""Create the schema of the pydantic defined run definition.

Writes the result to 'schema.json.'
"""

from naforest.run_config import RunConfig

with open("schema.json", "w") as f:
    f.write(RunConfig.schema_json(indent=2))
