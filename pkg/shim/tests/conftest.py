import threading
import time

import pytest
import requests


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A throwaway character-level causal model saved to disk.

    Random weights are fine: the protocol tests exercise determinism, stop
    handling, and logprob accounting, none of which need a trained model.
    """
    import torch
    from tokenizers import Regex, Tokenizer, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    chars = list(
        "0123456789_ \n"
        "abcdefghijklmnopqrstuvwxyz"
        "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
        "+-*/().,:<>#|!?="
    )
    vocab = {"<unk>": 0, "<eos>": 1}
    for c in chars:
        vocab[c] = len(vocab)
    raw = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    raw.pre_tokenizer = pre_tokenizers.Split(Regex(r"[\s\S]"), behavior="isolated")
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=raw, unk_token="<unk>", eos_token="<eos>"
    )
    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=256,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=1,
        eos_token_id=1,
    )
    model = GPT2LMHeadModel(config)
    path = tmp_path_factory.mktemp("tiny-model")
    tokenizer.save_pretrained(str(path))
    model.save_pretrained(str(path))
    return str(path)


@pytest.fixture(scope="session")
def shim_url(tiny_model_dir):
    """A running shim bound to an ephemeral port."""
    import uvicorn

    from lmxshim import ShimConfig, create_app, load_host

    config = ShimConfig(model_id=tiny_model_dir, device="cpu", max_new_tokens_ceiling=64)
    app = create_app(config, host=load_host(config))
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 30
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("shim server failed to start")
        time.sleep(0.05)
    port = server.servers[0].sockets[0].getsockname()[1]
    url = f"http://127.0.0.1:{port}"
    deadline = time.time() + 30
    while True:
        try:
            if requests.get(f"{url}/health", timeout=2).status_code == 200:
                break
        except requests.RequestException:
            pass
        if time.time() > deadline:
            raise RuntimeError("shim never became healthy")
        time.sleep(0.05)
    yield url
    server.should_exit = True
    thread.join(timeout=10)
