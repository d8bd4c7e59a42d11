import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, TimeoutError, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from config import SweepGrid
from errors import ConfigError, Diverged
from run_processor import RunProcessor
from utils import content_hash, thread_cap, write_json

INDEX_NAME = "index.json"


class ParallelProcessor:
    """Sweep runner: independent solver runs on a thread pool, one manifest index per sweep."""

    def __init__(self, run_processor: Optional[RunProcessor] = None, max_workers: Optional[int] = None,
                 timeout: float = 3600, max_retries: int = 3):
        self.run_processor = run_processor if run_processor is not None else RunProcessor()
        self.max_workers = thread_cap(max_workers)
        self.timeout = timeout  # seconds per run
        self.max_retries = max_retries
        self._index_lock = threading.Lock()

    def process_run_pipeline(self, index: int, kind: str, config: Dict[str, Any], out_root: Path,
                             base_dir: Optional[Path] = None,
                             overrides: Optional[Dict[str, Any]] = None,
                             duplicate_of: Optional[str] = None) -> Dict[str, Any]:
        """Run one sweep member; a diverged run is retried with half the time step."""
        run_id = f"run_{index:04d}"
        out = out_root / run_id
        config = dict(config)

        for attempt in range(self.max_retries + 1):
            try:
                logging.info(f"🔄 Starting {run_id} (attempt {attempt + 1}/{self.max_retries + 1})")
                manifest = self.run_processor.process(kind, config, out, base_dir=base_dir)
                entry = {
                    'run_id': run_id,
                    'status': 'completed',
                    'attempts': attempt + 1,
                    'content_hash': manifest['content_hash'],
                    'manifest': f"{run_id}/manifest.json",
                    'overrides': overrides or {},
                }
                if duplicate_of is not None:
                    entry['duplicate_of'] = duplicate_of
                self.append_index(out_root, entry)
                return entry

            except Diverged as e:
                logging.error(f"❌ {run_id} diverged at step {e.step} (attempt {attempt + 1}): {str(e)}")
                if attempt < self.max_retries and e.step > 0:
                    config['dt'] = 0.5 * e.t / e.step
                    logging.info(f"Retrying {run_id} with dt={config['dt']:.6g}")
                    continue
                entry = {'run_id': run_id, 'status': 'diverged', 'attempts': attempt + 1, 'error': str(e),
                         'overrides': overrides or {}}
                self.append_index(out_root, entry)
                return entry

            except (ValidationError, ConfigError) as e:
                entry = {'run_id': run_id, 'status': 'invalid', 'attempts': attempt + 1, 'error': str(e),
                         'overrides': overrides or {}}
                self.append_index(out_root, entry)
                return entry

            except Exception as e:
                logging.error(f"❌ Error in {run_id}: {str(e)}")
                entry = {'run_id': run_id, 'status': 'error', 'attempts': attempt + 1, 'error': str(e),
                         'overrides': overrides or {}}
                self.append_index(out_root, entry)
                return entry

    def process_runs_parallel(self, grid: SweepGrid, out_root: Path,
                              base_dir: Optional[Path] = None) -> List[Dict[str, Any]]:
        """Run every member of the sweep grid; results come back in grid order.

        Members whose expanded configs are identical are solved once; the
        later ones are served from the run cache after the pool drains.
        """
        configs = grid.expand()
        overrides = grid.overrides()

        out_root.mkdir(parents=True, exist_ok=True)
        results = [{'run_id': f"run_{i:04d}", 'overrides': o} for i, o in enumerate(overrides)]
        first_of: Dict[str, int] = {}
        duplicates: Dict[int, int] = {}
        for i, config in enumerate(configs):
            key = content_hash({"kind": grid.kind, "config": config})
            if key in first_of:
                duplicates[i] = first_of[key]
            else:
                first_of[key] = i
        if duplicates:
            logging.info(f"Sweep has {len(duplicates)} duplicate member(s); they reuse earlier runs")

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_index = {
                executor.submit(self.process_run_pipeline, i, grid.kind, configs[i], out_root, base_dir,
                                overrides[i]): i
                for i in first_of.values()
            }

            completed = 0
            total = len(future_to_index)
            for future in as_completed(future_to_index):
                i = future_to_index[future]
                completed += 1
                try:
                    result = future.result(timeout=self.timeout)
                    results[i] = result
                    logging.info(f"✅ Finished run {completed}/{total}: {result['run_id']} ({result['status']})")
                except TimeoutError:
                    logging.error(f"⏰ Timeout in run {i}")
                    results[i].update({'status': 'timeout', 'error': 'Run timed out'})
                except Exception as e:
                    logging.error(f"❌ Run {i} failed: {str(e)}")
                    results[i].update({'status': 'error', 'error': str(e)})

        for i, j in sorted(duplicates.items()):
            original = results[j]
            if original.get('status') == 'completed':
                results[i] = self.process_run_pipeline(i, grid.kind, configs[i], out_root, base_dir, overrides[i],
                                                       duplicate_of=original['run_id'])
            else:
                entry = {key: value for key, value in original.items() if key not in ('manifest', 'content_hash')}
                entry.update({'run_id': results[i]['run_id'], 'overrides': overrides[i],
                              'duplicate_of': original['run_id']})
                self.append_index(out_root, entry)
                results[i] = entry

        return results

    def append_index(self, out_root: Path, entry: Dict[str, Any]) -> None:
        """Append one entry to the sweep index, replacing the file atomically."""
        path = out_root / INDEX_NAME
        with self._index_lock:
            entries = json.loads(path.read_text(encoding="utf-8")) if path.exists() else []
            entries = [e for e in entries if e.get('run_id') != entry['run_id']]
            entries.append(entry)
            entries.sort(key=lambda e: e['run_id'])
            write_json(entries, path)

    def aggregate_results(self, run_results: List[Dict[str, Any]]) -> Dict[str, Any]:
        successful_results = [r for r in run_results if r.get('status') == 'completed']
        if not successful_results:
            return {
                'status': 'error',
                'message': 'No run of the sweep completed',
                'aggregated_data': None
            }
        by_status: Dict[str, int] = {}
        for r in run_results:
            by_status[r.get('status', 'unknown')] = by_status.get(r.get('status', 'unknown'), 0) + 1
        return {
            'status': 'success',
            'aggregated_data': {
                'total_runs': len(run_results),
                'successful_runs': len(successful_results),
                'by_status': by_status,
                'retried_runs': [r['run_id'] for r in successful_results if r.get('attempts', 1) > 1],
                'manifests': [r['manifest'] for r in successful_results],
            }
        }

