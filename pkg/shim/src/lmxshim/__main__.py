"""Launch the completions server.

    python -m lmxshim --model <hf-id-or-path> [--port 8000] [--device cpu]

The model identifier may also come from the LMXSHIM_MODEL environment
variable; weights are fetched or loaded at startup, and /health reports 503
until loading finishes.
"""

import argparse
import os


def main() -> None:
    parser = argparse.ArgumentParser(prog="lmxshim", description=__doc__)
    parser.add_argument(
        "--model",
        default=os.environ.get("LMXSHIM_MODEL"),
        help="model identifier or local path (env: LMXSHIM_MODEL)",
    )
    parser.add_argument("--port", type=int, default=int(os.environ.get("LMXSHIM_PORT", "8000")))
    parser.add_argument("--device", default=os.environ.get("LMXSHIM_DEVICE", "cpu"))
    parser.add_argument("--max-new-tokens", type=int, default=512, help="per-request ceiling")
    args = parser.parse_args()
    if not args.model:
        parser.error("--model is required (or set LMXSHIM_MODEL)")

    import uvicorn

    from .server import ShimConfig, create_app

    config = ShimConfig(
        model_id=args.model,
        device=args.device,
        max_new_tokens_ceiling=args.max_new_tokens,
        port=args.port,
    )
    app = create_app(config, load_in_background=True)
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="info")


if __name__ == "__main__":
    main()
