"""Rootfs pruning: match tokens against command chains and keep the closure.

Only paths containing ``/bin/``, ``/sbin/``, or ``/lib/`` are ever pruned
(substring semantics, so ``/usr/bin/`` and ``/usr/lib/`` count). Everything
retained is closed under symlink chains, hardlink targets, parent
directories, and the needed-library set of dynamic executables.
"""

from __future__ import annotations

import io
import json
import logging
import posixpath
import tarfile
from dataclasses import dataclass, field

from .analyzer import CommandTokenList
from .elf import resolve_elf_dependencies, rootfs_library_dirs
from .errors import PruneConsistencyError
from .imageio import (
    KIND_DEVICE,
    KIND_DIRECTORY,
    KIND_HARDLINK,
    KIND_REGULAR,
    KIND_SYMLINK,
    FlattenedRootfs,
)
from .rootfs import (
    SHELL_BUILTINS,
    CommandLinkedList,
    FileInfoList,
    resolve_chain,
    resolve_entry,
)

log = logging.getLogger(__name__)

PRUNE_MARKERS = ("/bin/", "/sbin/", "/lib/")

REASON_TOKEN = "token-match"
REASON_ELF = "elf-dependency"
REASON_INTERP = "interpreter"
REASON_PROTECTED = "non-protected"
REASON_PARENT = "parent-directory"
REASON_SYMLINK = "symlink-target"
REASON_HARDLINK = "hardlink-target"
REASON_CONSERVATIVE = "conservative"


def in_prune_area(path: str) -> bool:
    return any(marker in path for marker in PRUNE_MARKERS)


@dataclass
class RetainList:
    """Closed set of rootfs entry paths to keep, with a reason per path."""

    paths: set[str] = field(default_factory=set)
    reasons: dict[str, str] = field(default_factory=dict)
    missing_libraries: list[str] = field(default_factory=list)

    def add(self, path: str, reason: str) -> bool:
        added = path not in self.paths
        if added:
            self.paths.add(path)
            self.reasons[path] = reason
        return added


@dataclass
class MatchResult:
    matched: dict[str, str | None]  # token -> start node (None for built-ins)
    start_nodes: list[str]
    unmatched: list[str]


def match_tokens(ctl: CommandTokenList, cll: CommandLinkedList) -> MatchResult:
    """Exact-text match of every token against the node names.

    Bare names and absolute paths are distinct match keys. Shell built-ins
    count as matched without a start node; everything else (flags, file
    arguments, plain words) lands in unmatched.
    """
    matched: dict[str, str | None] = {}
    start_nodes: list[str] = []
    unmatched: list[str] = []
    for token in ctl.token_texts():
        if token in cll.nodes:
            matched[token] = token
            if token not in start_nodes:
                start_nodes.append(token)
        elif token in SHELL_BUILTINS:
            matched[token] = None
        else:
            unmatched.append(token)
    return MatchResult(matched=matched, start_nodes=start_nodes, unmatched=unmatched)


def _retain_spelling(retain: RetainList, info: FileInfoList, path: str, reason: str) -> str | None:
    """Retain the entries that make one path spelling resolvable.

    Adds every ancestor symlink crossed plus the entry the spelling denotes;
    returns that entry path (or None when the spelling dangles).
    """
    trace: list[str] = []
    physical = resolve_entry(info, path, trace=trace)
    for hop in trace:
        retain.add(hop, REASON_SYMLINK)
    if physical is None or physical not in info.records:
        return None
    retain.add(physical, reason)
    return physical


def _close_links(retain: RetainList, info: FileInfoList) -> None:
    """Fixed point: symlink one-hop targets and hardlink targets stay inside."""
    pending = sorted(retain.paths)
    while pending:
        path = pending.pop()
        rec = info.records.get(path)
        if rec is None:
            continue
        target = None
        reason = None
        if rec.kind == KIND_SYMLINK:
            target = info.symlink_table.get(path)
            reason = REASON_SYMLINK
        elif rec.kind == KIND_HARDLINK and rec.link_target:
            target = rec.link_target
            reason = REASON_HARDLINK
        if target is None:
            continue
        trace: list[str] = []
        physical = resolve_entry(info, target, trace=trace)
        for hop in trace:
            if retain.add(hop, REASON_SYMLINK):
                pending.append(hop)
        if physical is not None and physical in info.records:
            if retain.add(physical, reason):
                pending.append(physical)


def _retain_parents(retain: RetainList, info: FileInfoList) -> None:
    for path in sorted(retain.paths):
        parent = posixpath.dirname(path)
        while parent and parent != "/":
            if parent in info.records:
                retain.add(parent, REASON_PARENT)
            parent = posixpath.dirname(parent)


def build_retain_list(
    start_nodes,
    cll: CommandLinkedList,
    info: FileInfoList,
    rootfs: FlattenedRootfs,
    entry_paths=(),
) -> RetainList:
    """Closed retain set: chains, ELF closures, protected files, parents."""
    retain = RetainList()

    chain_entries: list[str] = []
    seen_entries: set[str] = set()
    for start in start_nodes:
        for path in resolve_chain(cll, start):
            entry = _retain_spelling(retain, info, path, REASON_TOKEN)
            if entry is not None and entry not in seen_entries:
                seen_entries.add(entry)
                chain_entries.append(entry)

    for spelled in entry_paths:
        entry = _retain_spelling(retain, info, spelled, REASON_TOKEN)
        if entry is not None and entry not in seen_entries:
            seen_entries.add(entry)
            chain_entries.append(entry)

    lib_dirs = rootfs_library_dirs(rootfs, info)
    for entry in chain_entries:
        closure = resolve_elf_dependencies(entry, rootfs, info, lib_dirs=lib_dirs)
        for lib in sorted(closure.paths):
            reason = REASON_INTERP if closure.interpreter and lib == closure.interpreter else REASON_ELF
            _retain_spelling(retain, info, lib, reason)
        if closure.interpreter:
            _retain_spelling(retain, info, closure.interpreter, REASON_INTERP)
        for name in closure.missing:
            if name not in retain.missing_libraries:
                retain.missing_libraries.append(name)
                log.warning("%s: needed library %r unresolved inside the rootfs", entry, name)

    for path in info.records:
        if not in_prune_area(path):
            retain.add(path, REASON_PROTECTED)

    _close_links(retain, info)
    _retain_parents(retain, info)

    missing = [p for p in retain.paths if p not in rootfs.entries]
    if missing:
        raise PruneConsistencyError(
            f"retain list references paths absent from the rootfs: {sorted(missing)[:5]}"
        )
    return retain


def emit_slim_rootfs(rootfs: FlattenedRootfs, retain: RetainList) -> bytes:
    """Tar stream of exactly the retained entries, sorted by path.

    Within each hardlink group the lexicographically first retained path
    carries the file content and the others reference it, so extraction
    never sees a forward link reference.
    """
    groups: dict[str, list[str]] = {}
    for path in retain.paths:
        rec = rootfs.entries.get(path)
        if rec is None:
            raise PruneConsistencyError(f"retain list references missing path {path!r}")
        if rec.kind == KIND_HARDLINK and rec.link_target and rec.link_target in retain.paths:
            groups.setdefault(rec.link_target, []).append(path)

    carrier: dict[str, str] = {}
    for target, links in groups.items():
        members = sorted([target, *links])
        for m in members:
            carrier[m] = members[0]

    out = io.BytesIO()
    with tarfile.open(fileobj=out, mode="w", format=tarfile.GNU_FORMAT) as tf:
        for path in sorted(retain.paths):
            rec = rootfs.entries[path]
            ti = tarfile.TarInfo(name=path.lstrip("/"))
            ti.mode = rec.mode
            ti.uid = rec.uid
            ti.gid = rec.gid
            ti.mtime = rec.mtime
            ti.uname = rec.uname
            ti.gname = rec.gname

            kind = rec.kind
            if path in carrier:
                kind = KIND_REGULAR if carrier[path] == path else KIND_HARDLINK

            if kind == KIND_REGULAR:
                data = rootfs.data_for(path)
                ti.type = tarfile.REGTYPE
                ti.size = len(data)
                tf.addfile(ti, io.BytesIO(data))
            elif kind == KIND_DIRECTORY:
                ti.type = tarfile.DIRTYPE
                tf.addfile(ti)
            elif kind == KIND_SYMLINK:
                ti.type = tarfile.SYMTYPE
                ti.linkname = rec.link_target or ""
                tf.addfile(ti)
            elif kind == KIND_HARDLINK:
                ti.type = tarfile.LNKTYPE
                target = carrier.get(path, rec.link_target or "")
                ti.linkname = target.lstrip("/")
                tf.addfile(ti)
            elif kind == KIND_DEVICE:
                ti.type = tarfile.BLKTYPE if rec.block_device else tarfile.CHRTYPE
                ti.devmajor = rec.devmajor
                ti.devminor = rec.devminor
                tf.addfile(ti)
            else:  # fifo
                ti.type = tarfile.FIFOTYPE
                tf.addfile(ti)
    return out.getvalue()


@dataclass
class PruneReport:
    matched_tokens: dict[str, str | None]
    unmatched_tokens: list[str]
    retained_count: int
    removed_count: int
    original_size: int
    slim_size: int
    slimming_ratio: float
    commands_before: int
    commands_after: int
    missing_libraries: list[str] = field(default_factory=list)
    cycles: list[list[str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    def table(self) -> str:
        """Terminal summary mirroring the size/ratio reporting columns."""
        rows = [
            ("original size", _human_size(self.original_size)),
            ("size after slimming", _human_size(self.slim_size)),
            ("slimming ratio", f"{self.slimming_ratio * 100:.1f}%"),
            ("commands before", str(self.commands_before)),
            ("commands after", str(self.commands_after)),
            ("entries retained", str(self.retained_count)),
            ("entries removed", str(self.removed_count)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _human_size(n: int) -> str:
    value = float(n)
    for unit in ("B", "KB", "MB", "GB"):
        if value < 1024 or unit == "GB":
            return f"{value:.1f}{unit}" if unit != "B" else f"{int(value)}B"
        value /= 1024
    return f"{n}B"


def surviving_commands(cll: CommandLinkedList, info: FileInfoList, retain: RetainList) -> int:
    """Head commands whose full chain still resolves inside the retain set."""
    count = 0
    for head in cll.heads:
        alive = True
        for path in resolve_chain(cll, head):
            trace: list[str] = []
            physical = resolve_entry(info, path, trace=trace)
            needed = set(trace)
            if physical is not None and physical in info.records:
                needed.add(physical)
            else:
                alive = False
                break
            if not needed.issubset(retain.paths):
                alive = False
                break
        if alive:
            count += 1
    return count


def compute_report(
    rootfs: FlattenedRootfs,
    cll: CommandLinkedList,
    retain: RetainList,
    match: MatchResult | None = None,
    after_cll: CommandLinkedList | None = None,
    info: FileInfoList | None = None,
) -> PruneReport:
    """Sizes, ratio, and supported-command counts before and after pruning."""
    slim_size = sum(
        rec.size
        for path, rec in rootfs.entries.items()
        if path in retain.paths and rec.kind == KIND_REGULAR
    )
    original = rootfs.total_size
    ratio = 0.0 if original == 0 else 1.0 - slim_size / original
    commands_before = len(cll.heads)
    if after_cll is not None:
        commands_after = len(after_cll.heads)
    elif info is not None:
        commands_after = surviving_commands(cll, info, retain)
    else:
        commands_after = commands_before
    return PruneReport(
        matched_tokens=dict(match.matched) if match else {},
        unmatched_tokens=list(match.unmatched) if match else [],
        retained_count=len(retain.paths),
        removed_count=len(rootfs.entries) - len(retain.paths),
        original_size=original,
        slim_size=slim_size,
        slimming_ratio=ratio,
        commands_before=commands_before,
        commands_after=commands_after,
        missing_libraries=list(retain.missing_libraries),
        cycles=list(cll.cycles),
        warnings=list(rootfs.warnings),
    )
