"""CLI: `embed` exports vectors, `serve` runs the mock step server."""

from __future__ import annotations

import argparse
import json
import sys

from .embed import EmbeddingJob, IoError, ModelLoadError, embed
from .server import MockModel, PortInUse, load_vocab_file, serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clinibench-embedder")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("embed", help="embed a JSONL of {id, text} into a vector file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--model", default="fake-trigram")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--fake", action="store_true", help="hash-projection embeddings, no model download")
    p.add_argument("--no-normalize", dest="normalize", action="store_false")

    p = sub.add_parser("serve", help="run the mock step-inference server")
    p.add_argument("--vocab", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--policy", choices=("uniform", "scripted"), default="uniform")
    p.add_argument("--targets", help="JSON file: sha256(prompt) -> target string, plus optional 'default'")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.subcommand == "embed":
            job = EmbeddingJob(
                input_path=args.input,
                output_path=args.output,
                model_name=args.model,
                dim=args.dim,
                normalize=args.normalize,
                use_fake=args.fake,
            )
            count = embed(job)
            print(f"wrote {count} vectors to {args.output}")
            return 0
        tokens, eos_id, vocab_hash = load_vocab_file(args.vocab)
        targets = None
        if args.targets:
            with open(args.targets, encoding="utf-8") as fh:
                targets = json.load(fh)
        model = MockModel(tokens, eos_id, vocab_hash, args.policy, targets, args.seed)
        server = serve(model, args.host, args.port)
        print(f"serving on http://{args.host}:{server.server_address[1]}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0
    except (ModelLoadError, IoError, PortInUse, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
