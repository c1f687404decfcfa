"""Plain-text dumps of fitted models, for comparing runs and checking results by eye."""

import json
import os
from typing import Any, Union


def _plain(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, float) and value != value:
        return None
    return value


def dump_model(model: Any, path: Union[str, os.PathLike, None] = None) -> str:
    """Renders a model as indented JSON, and writes it to `path` when given.

    Args:
        model: Anything with an `as_dict()` method: a KMeansModel, GmmModel,
            PageRankState or Neighbor, or a plain dict or list of those.

    Returns:
        The JSON text.
    """
    if isinstance(model, list):
        data = [item.as_dict() if hasattr(item, "as_dict") else item for item in model]
    else:
        data = model.as_dict() if hasattr(model, "as_dict") else model
    text = json.dumps(data, indent=2, default=_plain)
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    return text
