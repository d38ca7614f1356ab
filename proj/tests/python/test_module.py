import json

import pytest

pf = pytest.importorskip("peer_forge")

GROWING = {
    "rules": [
        {"prefix": "Create page", "output": "Create page ### {title} is a language model."},
        {"prefix": ".", "output": "{text} It edits text."},
        {"outputs": ["add detail ### {text} More.", "expand ### {text} Even more.", "fix ### {text}"]},
    ]
}


def test_diff_roundtrip():
    d = pf.word_diff("a b c", "a x c")
    assert d == [{"op": "replace", "source_span": [1, 2], "source_words": ["b"],
                  "target_span": [1, 2], "target_words": ["x"]}]
    assert pf.apply_diff("a b c", d) == "a x c"
    assert pf.em_diff("a b c d", "a B c D", "a B c d") == 0.5


def test_markup_roundtrip():
    cs = {"type": "instruction", "length": "m", "overlap": False, "words": -3}
    assert pf.decode_controls(pf.encode_controls(cs)) == cs
    enc = pf.encode_citation_markers("Reese won.", [{"doc_index": 0, "position": 10, "quote": "born in 1986"}], 1)
    assert enc == "Reese won.[[[0 quote=born in 1986]]]"
    dec = pf.decode_citation_markers(enc)
    assert dec["text"] == "Reese won."
    assert dec["markers"][0]["quote"] == "born in 1986"


def test_errors_carry_codes():
    with pytest.raises(pf.PeerError) as e:
        pf.encode_citation_markers("x", [{"doc_index": 4, "position": 0}], 1)
    assert e.value.code == "DanglingCitation"


def test_metrics():
    assert pf.sari("a b c", ["a b c"], "a b c") == pytest.approx(100.0)
    assert pf.gleu(["a b c d"], [["a b c d"]], ["a b c d"]) == pytest.approx(100.0)
    assert pf.rouge("the cat", "the cat")["rouge1"] == pytest.approx(100.0)
    report = pf.evaluate([{"id": "1", "source": "a b", "refs": ["a c"]}], [{"id": "1", "text": "a c"}], "em,sari")
    assert report["aggregates"]["em"] == 100.0


def test_words_sampler():
    xs = pf.sample_words(5000, seed=3)
    assert all(-40 <= x <= 10 for x in xs)
    assert pf.sample_words(10, seed=3) == xs[:10]


def test_session_with_mock_backend():
    b = pf.mock_backend(GROWING)
    s = pf.Session("", docs=[{"id": "d0", "content": "Doc."}], mode="collaborative", title="PEER (Language Model)")
    cands = s.propose(b, plan="Create page")
    assert len(cands) == 3
    assert cands[0]["plan_source"] == "user"
    s.choose(0)
    assert s.text == "PEER (Language Model) is a language model."
    s.propose(b)
    s.choose(0)
    assert s.iterations == 2
    again = pf.Session.replay_jsonl(s.export_jsonl())
    assert again.text == s.text
    clone = pf.Session.from_dict(json.loads(json.dumps(s.to_dict())))
    assert clone.export_jsonl() == s.export_jsonl()
    with pytest.raises(pf.PeerError) as e:
        s.choose(0)
    assert e.value.code == "NoPending"


def test_run_halts_at_fixed_point():
    b = pf.mock_backend({"rules": [{"output": "nothing to do ### {text}"}]})
    s = pf.Session("Done.", mode="autonomous")
    s.run(b, pf.autonomous_schedule(10))
    assert s.halted and s.iterations == 1 and s.halt_reason == "fixed_point"


def test_backend_generate_and_score():
    b = pf.make_backend("mock:echo")
    out = b.generate({"input": "Hello.", "decoder_prefix": "plan ### ",
                      "decoding": {"kind": "greedy"}})
    assert out[0]["text"].startswith("plan ### ")
    assert b.score("x", "some output")["sum_logprob"] < 0


def test_build_example(fixtures):
    fx = json.loads((fixtures / "reese_example.json").read_text())
    ex = pf.build_example("edit", fx["pair"], fx["docs"], fx["plan"])
    assert ex["input"] == fx["expected_input"]
    assert ex["output"] == fx["expected_output"]
