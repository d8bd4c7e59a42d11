import logging
import shutil
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel

from cache_manager import CacheManager
from channel_solver import ChannelSolver
from config import ChannelConfig, TorusConfig
from galerkin_periodic import GalerkinSolver
from utils import VERSION, content_hash, write_csv, write_json

RUN_MODELS = {"channel": ChannelConfig, "galerkin": TorusConfig}


class RunProcessor:
    """Validates one solver config, runs it and persists profiles, ledgers and the manifest."""

    def __init__(self, cache_manager: Optional[CacheManager] = None):
        self.cache_manager = cache_manager if cache_manager is not None else CacheManager()

    def _validate_input(self, kind: str, config: Union[BaseModel, Dict[str, Any]]) -> BaseModel:
        if kind not in RUN_MODELS:
            raise ValueError(f"Unknown run kind '{kind}' (expected one of {sorted(RUN_MODELS)})")
        model = RUN_MODELS[kind]
        if isinstance(config, model):
            return config
        if isinstance(config, BaseModel):
            raise ValueError(f"{kind} runs take a {model.__name__}, got {type(config).__name__}")
        return model.model_validate(config)

    def _run_channel(self, config: ChannelConfig, out: Path) -> Dict[str, Any]:
        run = ChannelSolver(config).run_to_steady()
        write_csv(run.profile, out / "profile.csv")
        write_csv(run.ledger.to_frame(), out / "ledger.csv")
        return {
            "outputs": ["profile.csv", "ledger.csv"],
            "summary": {
                "steady": run.steady,
                "t_final": run.state.t,
                "steps": run.state.step,
                "dt": run.dt,
                "reg_n": run.reg_n,
                "plug_tolerance": run.plug_tolerance,
                "plug_intervals": [list(interval) for interval in run.plug_intervals],
                "plug_half_width": run.plug_half_width,
                "cumulative_residual": run.ledger.cumulative_residual,
            },
        }

    def _run_galerkin(self, config: TorusConfig, out: Path, base_dir: Optional[Path]) -> Dict[str, Any]:
        run = GalerkinSolver(config, base_dir=base_dir).integrate()
        write_csv(run.series, out / "series.csv")
        return {"outputs": ["series.csv"], "summary": run.summary}

    def _reuse(self, cached: Dict[str, Any], out: Path) -> Dict[str, Any]:
        """Copy the files of an earlier identical run into out."""
        source = Path(cached["out"])
        manifest = cached["manifest"]
        if source != out.resolve():
            out.mkdir(parents=True, exist_ok=True)
            for name in manifest["outputs"]:
                shutil.copyfile(source / name, out / name)
        return manifest

    def process(self, kind: str, config: Union[BaseModel, Dict[str, Any]], out_dir: Union[str, Path],
                base_dir: Optional[Path] = None) -> Dict[str, Any]:
        """Run one config and return its manifest; identical configs reuse the cached result."""
        try:
            config = self._validate_input(kind, config)
            out = Path(out_dir)
            config_data = config.model_dump(mode="json")
            run_hash = content_hash({"kind": kind, "config": config_data})

            cached_result = self.cache_manager.get(run_hash)
            if cached_result and (Path(cached_result["out"]) / "manifest.json").exists():
                logging.info(f"♻️ Reusing run {run_hash[:12]} from {cached_result['out']}")
                return self._reuse(cached_result, out)

            logging.info(f"🚀 Starting {kind} run {run_hash[:12]} -> {out}")
            out.mkdir(parents=True, exist_ok=True)
            if kind == "channel":
                result = self._run_channel(config, out)
            else:
                result = self._run_galerkin(config, out, base_dir)

            manifest = {
                "kind": kind,
                "version": VERSION,
                "content_hash": run_hash,
                "seed": config_data.get("seed"),
                "config": config_data,
                "summary": result["summary"],
                "outputs": result["outputs"] + ["manifest.json"],
            }
            write_json(manifest, out / "manifest.json")
            logging.info(f"✅ Completed {kind} run {run_hash[:12]}")

            self.cache_manager.set(run_hash, {"manifest": manifest, "out": str(out.resolve())})
            return manifest

        except Exception as e:
            logging.error(f"❌ Error processing {kind} run: {str(e)}")
            raise
