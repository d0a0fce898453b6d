import numpy as np
import pytest

from corrsr import cli, pipeline, retrieval, sparse, synthetic
from corrsr.image import load_image, load_luma, save_image
from corrsr.pipeline import (ConfigError, InputError, PipelineConfig,
                             apply_config_entry, eval_means, eval_rows_to_csv,
                             format_eval_table, load_config, parse_eval_csv)


@pytest.fixture(scope="module")
def desk_config():
    config = PipelineConfig()
    config.retrieval.k = 120
    config.retrieval.scale_percentile = 0.0
    config.retrieval.member_radius = 9.0
    config.retrieval.min_score = 1.0
    config.retrieval.top_n = 3
    config.sr.dict_size = 128
    config.sr.iterations = 6
    config.sr.sparsity = 5
    return config


@pytest.fixture(scope="module")
def desk_world(tmp_path_factory, desk_config):
    """Corpus directory with correlated views, built index, generic dictionary."""
    root = tmp_path_factory.mktemp("world")
    corpus_dir = root / "corpus"
    corpus_dir.mkdir()
    masters = [synthetic.textured_scene(300 + i, (176, 176), sharpness=1.0)
               for i in range(4)]
    tests = [m[24:152, 24:152] for m in masters[:2]]
    n = 0
    for m in masters:
        for oy, ox in ((16, 20), (28, 24)):
            save_image(corpus_dir / f"c{n:02d}.pgm", m[oy:oy + 128, ox:ox + 128])
            n += 1
    build = pipeline.build_index(corpus_dir, desk_config)
    generic = pipeline.train_generic_dictionary(
        [synthetic.textured_scene(900 + i, (96, 96), sharpness=1.0) for i in range(4)],
        desk_config, max_pairs=3000)
    return corpus_dir, tests, build, generic


class TestConfig:
    def test_defaults_valid(self):
        PipelineConfig().validate()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            apply_config_entry(PipelineConfig(), "sr.mystery", "1")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            apply_config_entry(PipelineConfig(), "sr.patch_size", "many")

    def test_range_validation(self):
        config = PipelineConfig()
        config.sr.overlap = 10
        with pytest.raises(ConfigError):
            config.validate()

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# comment\n"
            "upscale = 3\n"
            "retrieval.k = 55\n"
            "registration.logpolar = false\n"
            "sr.eps = 0.25\n"
        )
        config = load_config(path, {"retrieval.k": "77"})
        assert config.upscale == 3
        assert config.retrieval.k == 77          # override wins
        assert config.registration.logpolar is False
        assert config.sr.eps == 0.25

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("upscale 3\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.cfg")


class TestBuildIndex:
    def test_counts_and_skip_manifest(self, tmp_path, desk_config):
        corpus = tmp_path / "c"
        corpus.mkdir()
        for i in range(3):
            save_image(corpus / f"i{i}.pgm",
                       synthetic.textured_scene(40 + i, (96, 96)))
        (corpus / "broken.pgm").write_bytes(b"P5\n8 8\n255\nxx")
        build = pipeline.build_index(corpus, desk_config)
        assert build.n_indexed == 3
        assert build.n_skipped == 1
        assert "broken.pgm" in build.index.skipped[0][0]
        assert len(build.index.images) == 3

    def test_empty_directory_rejected(self, tmp_path, desk_config):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(InputError):
            pipeline.build_index(empty, desk_config)

    def test_deterministic_vocabulary_bytes(self, tmp_path, desk_config):
        corpus = tmp_path / "c"
        corpus.mkdir()
        for i in range(3):
            save_image(corpus / f"i{i}.pgm",
                       synthetic.textured_scene(60 + i, (96, 96)))
        v1 = pipeline.build_index(corpus, desk_config).vocab
        v2 = pipeline.build_index(corpus, desk_config).vocab
        p1, p2 = tmp_path / "a.vocab", tmp_path / "b.vocab"
        retrieval.save_vocabulary(p1, v1)
        retrieval.save_vocabulary(p2, v2)
        assert p1.read_bytes() == p2.read_bytes()


@pytest.mark.slow
class TestRunSr:
    def test_adaptive_path_with_provenance(self, desk_world, desk_config):
        _, tests, build, generic = desk_world
        lr = pipeline.degrade(tests[0], 2)
        result = pipeline.run_sr(lr, desk_config, vocab=build.vocab,
                                 index=build.index, generic_pair=generic)
        assert result.dictionary_source == "adaptive"
        assert any(c.used for c in result.candidates)
        assert result.output.shape == tests[0].shape
        text = result.provenance_text()
        assert "dictionary: adaptive" in text
        assert "dy=" in text

    def test_fallback_without_index(self, desk_world, desk_config):
        _, tests, _, generic = desk_world
        lr = pipeline.degrade(tests[0], 2)
        result = pipeline.run_sr(lr, desk_config, generic_pair=generic)
        assert result.dictionary_source == "generic"
        assert any("falling back" in note for note in result.notes)

    def test_no_dictionary_at_all_rejected(self, desk_config):
        lr = np.zeros((32, 32))
        with pytest.raises(InputError):
            pipeline.run_sr(lr, desk_config)

    def test_output_dims_scale_with_input(self, desk_world, desk_config):
        _, _, _, generic = desk_world
        out = pipeline.run_sr(np.full((20, 26), 80.0), desk_config,
                              generic_pair=generic).output
        assert out.shape == (40, 52)


class TestEvalFormatting:
    def _rows(self):
        return [
            pipeline.EvalRow("a.pgm", 26.53, 0.9008, 27.26, 0.91651),
            pipeline.EvalRow("b.pgm", 27.58, 0.8805, 27.61, 0.899),
        ]

    def test_table_layout(self):
        table = format_eval_table(self._rows())
        lines = table.splitlines()
        assert lines[0].split() == ["IMAGE", "BASIC", "PSNR", "BASIC", "SSIM",
                                    "PROPOSED", "PSNR", "PROPOSED", "SSIM"]
        assert lines[1].startswith("a.pgm")
        assert lines[-1].startswith("MEAN")
        assert "27.260000" in lines[1]

    def test_csv_round_trip_exact(self):
        rows = self._rows()
        csv_text = eval_rows_to_csv(rows)
        back = parse_eval_csv(csv_text)
        assert len(back) == 3  # two rows + mean
        for orig, parsed in zip(rows, back):
            assert parsed.image == orig.image
            assert f"{parsed.basic_psnr:.6f}" == f"{orig.basic_psnr:.6f}"
            assert f"{parsed.proposed_ssim:.6f}" == f"{orig.proposed_ssim:.6f}"
        mean = eval_means(rows)
        assert f"{back[2].basic_psnr:.6f}" == f"{mean.basic_psnr:.6f}"

    def test_flat_field_row_equal_metrics(self, desk_config, tmp_path):
        generic_rng = np.random.default_rng(0)
        pair = sparse.normalize_dictionary(sparse.DictionaryPair(
            dh=generic_rng.normal(size=(100, 30)),
            dl=generic_rng.normal(size=(400, 30)), patch_size=10, upscale=2))
        flat = np.full((64, 64), 128.0)
        row = pipeline.evaluate_image(flat, "flat", desk_config, generic_pair=pair)
        assert row.proposed_psnr == row.basic_psnr
        assert row.proposed_ssim == row.basic_ssim

    def test_eval_rows_deterministic(self, desk_config):
        generic_rng = np.random.default_rng(0)
        pair = sparse.normalize_dictionary(sparse.DictionaryPair(
            dh=generic_rng.normal(size=(100, 30)),
            dl=generic_rng.normal(size=(400, 30)), patch_size=10, upscale=2))
        hr = synthetic.textured_scene(31, (64, 64))
        first = pipeline.evaluate_image(hr, "x", desk_config, generic_pair=pair)
        second = pipeline.evaluate_image(hr, "x", desk_config, generic_pair=pair)
        assert format_eval_table([first]) == format_eval_table([second])


class TestCli:
    def test_interp_subcommand(self, tmp_path, capsys):
        src = tmp_path / "in.pgm"
        save_image(src, synthetic.textured_scene(3, (48, 48)))
        out = tmp_path / "out.pgm"
        rc = cli.main(["interp", str(src), str(out), "--scale", "2"])
        assert rc == 0
        assert load_luma(out).shape == (96, 96)

    def test_interp_color_png(self, tmp_path, rng):
        src = tmp_path / "in.png"
        save_image(src, rng.integers(0, 255, (32, 32, 3)).astype(float))
        out = tmp_path / "out.png"
        assert cli.main(["interp", str(src), str(out), "--scale", "1.5",
                         "--edge", "clamp"]) == 0
        assert load_image(out).shape == (48, 48, 3)

    def test_interp_bad_scale_exits_2(self, tmp_path):
        src = tmp_path / "in.pgm"
        save_image(src, np.zeros((16, 16)))
        assert cli.main(["interp", str(src), str(tmp_path / "o.pgm"),
                         "--scale", "-1"]) == 2

    def test_missing_input_exits_1(self, tmp_path):
        assert cli.main(["interp", str(tmp_path / "none.pgm"),
                         str(tmp_path / "o.pgm"), "--scale", "2"]) == 1

    def test_bad_config_key_exits_2(self, tmp_path):
        src = tmp_path / "in.pgm"
        save_image(src, np.zeros((16, 16)))
        assert cli.main(["--set", "bogus.key=1", "interp", str(src),
                         str(tmp_path / "o.pgm"), "--scale", "2"]) == 2

    def test_register_line_format(self, tmp_path, capsys):
        ref = synthetic.textured_scene(5, (64, 64))
        mov = np.roll(ref, (3, -4), axis=(0, 1))
        ref_p, mov_p = tmp_path / "ref.pgm", tmp_path / "mov.pgm"
        save_image(ref_p, ref)
        save_image(mov_p, mov)
        rc = cli.main(["register", str(ref_p), str(mov_p), "--kappa", "1",
                       "--no-logpolar"])
        assert rc == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        fields = line.split()
        assert fields[0] == str(mov_p)
        assert [f"{float(v):.6f}" for v in fields[1:]] == fields[1:]
        assert float(fields[1]) == 3.0 and float(fields[2]) == -4.0

    def test_register_multiple_candidates_one_line_each(self, tmp_path, capsys):
        ref = synthetic.textured_scene(5, (64, 64))
        paths = []
        for k in (1, 2, 3):
            p = tmp_path / f"m{k}.pgm"
            save_image(p, np.roll(ref, (k, k), axis=(0, 1)))
            paths.append(str(p))
        ref_p = tmp_path / "ref.pgm"
        save_image(ref_p, ref)
        assert cli.main(["register", str(ref_p), *paths, "--kappa", "1",
                         "--no-logpolar"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3


@pytest.mark.slow
class TestCliEndToEnd:
    def test_index_retrieve_sr_eval(self, desk_world, desk_config, tmp_path, capsys):
        corpus_dir, tests, _, generic = desk_world
        vocab_p = tmp_path / "v.vocab"
        index_p = tmp_path / "w.idx"
        dict_p = tmp_path / "g.dict"
        sparse.save_dictionary(dict_p, generic)

        config_p = tmp_path / "run.cfg"
        config_p.write_text(
            "retrieval.k = 120\nretrieval.scale_percentile = 0\n"
            "retrieval.member_radius = 9\nretrieval.min_score = 1\n"
            "retrieval.top_n = 3\nsr.dict_size = 128\nsr.iterations = 6\n"
            "sr.sparsity = 5\n"
        )
        base = ["--config", str(config_p)]

        rc = cli.main(base + ["index", str(corpus_dir), "--vocab", str(vocab_p),
                              "--index", str(index_p)])
        assert rc == 0
        assert vocab_p.is_file() and index_p.is_file()
        capsys.readouterr()

        query_p = tmp_path / "query.pgm"
        save_image(query_p, tests[0])
        rc = cli.main(base + ["retrieve", str(query_p), "--vocab", str(vocab_p),
                              "--index", str(index_p), "--top-n", "2"])
        assert rc == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert out_lines and out_lines[0].split()[0] == "1"
        assert "c00.pgm" in out_lines[0] or "c01.pgm" in out_lines[0]

        lr_p = tmp_path / "lr.pgm"
        save_image(lr_p, pipeline.degrade(tests[0], 2))
        out_p = tmp_path / "sr.pgm"
        rc = cli.main(base + ["sr", str(lr_p), str(out_p), "--vocab", str(vocab_p),
                              "--index", str(index_p), "--dict", str(dict_p)])
        assert rc == 0
        assert "dictionary: adaptive" in capsys.readouterr().out
        assert load_luma(out_p).shape == tests[0].shape

        test_dir = tmp_path / "testset"
        test_dir.mkdir()
        save_image(test_dir / "t0.pgm", tests[0][:64, :64])
        csv_p = tmp_path / "eval.csv"
        rc = cli.main(base + ["eval", str(test_dir), "--csv", str(csv_p),
                              "--dict", str(dict_p)])
        assert rc == 0
        table = capsys.readouterr().out
        assert "BASIC PSNR" in table and "MEAN" in table
        rows = parse_eval_csv(csv_p.read_text())
        assert rows[0].image == "t0.pgm"

    def test_sr_without_index_warns_and_falls_back(self, desk_world, tmp_path,
                                                   capsys, desk_config):
        _, tests, _, generic = desk_world
        dict_p = tmp_path / "g.dict"
        sparse.save_dictionary(dict_p, generic)
        lr_p = tmp_path / "lr.pgm"
        save_image(lr_p, pipeline.degrade(tests[0], 2))
        out_p = tmp_path / "out.pgm"
        rc = cli.main(["--set", "sr.sparsity=5", "sr", str(lr_p), str(out_p),
                       "--dict", str(dict_p)])
        assert rc == 0
        captured = capsys.readouterr()
        assert "generic" in captured.out
        assert "unavailable" in captured.err or "warning" in captured.err

    def test_sr_color_input(self, desk_world, tmp_path, capsys):
        _, tests, _, generic = desk_world
        dict_p = tmp_path / "g.dict"
        sparse.save_dictionary(dict_p, generic)
        rgb = np.stack([tests[0], np.roll(tests[0], 1, 0),
                        np.roll(tests[0], 1, 1)], axis=2)
        lr_rgb = np.stack([pipeline.degrade(rgb[:, :, c], 2) for c in range(3)],
                          axis=2)
        lr_p = tmp_path / "lr.png"
        save_image(lr_p, lr_rgb)
        out_p = tmp_path / "sr.png"
        rc = cli.main(["sr", str(lr_p), str(out_p), "--dict", str(dict_p)])
        assert rc == 0
        out = load_image(out_p)
        assert out.shape == (128, 128, 3)
        assert not np.array_equal(out[:, :, 0], out[:, :, 1])

    def test_train_dict_subcommand(self, desk_world, tmp_path, capsys):
        corpus_dir, _, _, _ = desk_world
        out_p = tmp_path / "trained.dict"
        rc = cli.main(["--set", "sr.dict_size=64", "--set", "sr.iterations=2",
                       "train-dict", str(corpus_dir), "--out", str(out_p)])
        assert rc == 0
        pair = sparse.load_dictionary(out_p)
        assert pair.k <= 64 and pair.upscale == 2
