import os
import pathlib
import sys
import uvicorn

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.append(str(ROOT))
from hypmetrics.app.main import app

if __name__ == "__main__":
    uvicorn.run(
        app,
        host=os.getenv("HYPMETRICS_HOST", "127.0.0.1"),
        port=int(os.getenv("HYPMETRICS_PORT", "8000")),
    )
