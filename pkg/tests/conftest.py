"""Shared fixture builders and independent oracles.

Everything here is deliberately naive: tar archives are assembled by hand,
the flatten oracle extracts layers onto a scratch directory, and the symlink
oracle re-derives resolution recursively from raw ground truth recorded by
the generators.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import os
import posixpath
import shutil
import struct
import tarfile

import pytest

from staticslim.imageio import LayerBlob, LayerStack


def sha256(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


# --- tar and image archive builders -----------------------------------------


def make_layer_tar(members) -> bytes:
    """Assemble a layer tar from member dicts (path, kind, data, target...)."""
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.GNU_FORMAT) as tf:
        for m in members:
            kind = m.get("kind") or ("regular" if "data" in m else "directory")
            ti = tarfile.TarInfo(name=m["path"].lstrip("/"))
            ti.mtime = m.get("mtime", 1000000)
            ti.uid = m.get("uid", 0)
            ti.gid = m.get("gid", 0)
            ti.uname = m.get("uname", "")
            ti.gname = m.get("gname", "")
            if kind == "regular":
                data = m.get("data", b"")
                ti.type = tarfile.REGTYPE
                ti.size = len(data)
                ti.mode = m.get("mode", 0o644)
                tf.addfile(ti, io.BytesIO(data))
            elif kind == "directory":
                ti.type = tarfile.DIRTYPE
                ti.mode = m.get("mode", 0o755)
                tf.addfile(ti)
            elif kind == "symlink":
                ti.type = tarfile.SYMTYPE
                ti.linkname = m["target"]
                ti.mode = m.get("mode", 0o777)
                tf.addfile(ti)
            elif kind == "hardlink":
                ti.type = tarfile.LNKTYPE
                ti.linkname = m["target"].lstrip("/")
                ti.mode = m.get("mode", 0o644)
                tf.addfile(ti)
            elif kind == "fifo":
                ti.type = tarfile.FIFOTYPE
                ti.mode = m.get("mode", 0o644)
                tf.addfile(ti)
            elif kind in ("char-device", "block-device"):
                ti.type = tarfile.CHRTYPE if kind == "char-device" else tarfile.BLKTYPE
                ti.mode = m.get("mode", 0o660)
                ti.devmajor = m.get("devmajor", 1)
                ti.devminor = m.get("devminor", 3)
                tf.addfile(ti)
            else:
                raise ValueError(f"unknown member kind {kind!r}")
    return buf.getvalue()


def make_stack(layer_tars) -> LayerStack:
    layers = []
    for data in layer_tars:
        layers.append(
            LayerBlob(
                media_type="application/vnd.oci.image.layer.v1.tar",
                digest=sha256(data),
                diff_id=sha256(data),
                data=data,
            )
        )
    return LayerStack(layers=layers)


def default_config(layer_tars, **overrides) -> dict:
    cfg = {
        "architecture": "amd64",
        "os": "linux",
        "config": overrides.pop("config", {}),
        "rootfs": {"type": "layers", "diff_ids": [sha256(t) for t in layer_tars]},
    }
    cfg.update(overrides)
    return cfg


def _tar_add_bytes(tf: tarfile.TarFile, name: str, data: bytes) -> None:
    ti = tarfile.TarInfo(name=name)
    ti.size = len(data)
    ti.mode = 0o644
    tf.addfile(ti, io.BytesIO(data))


def make_docker_archive(layer_tars, config: dict | None = None, repo_tag="demo:latest") -> bytes:
    """Hand-rolled docker-save layout, independent of the package writer."""
    cfg = config if config is not None else default_config(layer_tars)
    cfg_bytes = json.dumps(cfg).encode()
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        layer_names = []
        for i, data in enumerate(layer_tars):
            name = f"layer{i}/layer.tar"
            layer_names.append(name)
            _tar_add_bytes(tf, name, data)
        _tar_add_bytes(tf, "config.json", cfg_bytes)
        manifest = [
            {
                "Config": "config.json",
                "RepoTags": [repo_tag] if repo_tag else [],
                "Layers": layer_names,
            }
        ]
        _tar_add_bytes(tf, "manifest.json", json.dumps(manifest).encode())
    return buf.getvalue()


def make_oci_archive(
    layer_tars,
    config: dict | None = None,
    ref="demo:latest",
    gzip_layers=False,
    corrupt_layer: int | None = None,
) -> bytes:
    """Hand-rolled OCI image layout inside a tar."""
    cfg = config if config is not None else default_config(layer_tars)
    cfg_bytes = json.dumps(cfg).encode()

    blobs: dict[str, bytes] = {}

    def add_blob(data: bytes) -> str:
        digest = sha256(data)
        blobs[digest] = data
        return digest

    layer_descs = []
    for i, data in enumerate(layer_tars):
        if gzip_layers:
            blob = gzip.compress(data, mtime=0)
            media = "application/vnd.oci.image.layer.v1.tar+gzip"
        else:
            blob = data
            media = "application/vnd.oci.image.layer.v1.tar"
        digest = add_blob(blob)
        if corrupt_layer == i:
            # Declared digest no longer matches the stored bytes.
            blobs[digest] = blob[:-1] + bytes([blob[-1] ^ 0xFF])
        layer_descs.append({"mediaType": media, "digest": digest, "size": len(blob)})

    cfg_digest = add_blob(cfg_bytes)
    manifest = {
        "schemaVersion": 2,
        "mediaType": "application/vnd.oci.image.manifest.v1+json",
        "config": {
            "mediaType": "application/vnd.oci.image.config.v1+json",
            "digest": cfg_digest,
            "size": len(cfg_bytes),
        },
        "layers": layer_descs,
    }
    manifest_bytes = json.dumps(manifest).encode()
    manifest_digest = add_blob(manifest_bytes)

    index = {
        "schemaVersion": 2,
        "manifests": [
            {
                "mediaType": "application/vnd.oci.image.manifest.v1+json",
                "digest": manifest_digest,
                "size": len(manifest_bytes),
                "annotations": {"org.opencontainers.image.ref.name": ref},
            }
        ],
    }
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w") as tf:
        _tar_add_bytes(tf, "oci-layout", json.dumps({"imageLayoutVersion": "1.0.0"}).encode())
        _tar_add_bytes(tf, "index.json", json.dumps(index).encode())
        for digest, data in blobs.items():
            alg, hexd = digest.split(":", 1)
            _tar_add_bytes(tf, f"blobs/{alg}/{hexd}", data)
    return buf.getvalue()


# --- canonical fixtures -------------------------------------------------------


def shell_chain_members(extra=()):
    """The sh/dash/bin-symlink rootfs used throughout: /bin -> usr/bin,
    /usr/bin/sh -> dash, dash a real executable."""
    members = [
        {"path": "/usr", "kind": "directory"},
        {"path": "/usr/bin", "kind": "directory"},
        {"path": "/usr/bin/dash", "kind": "regular", "mode": 0o755, "data": b"dash binary"},
        {"path": "/usr/bin/sh", "kind": "symlink", "target": "dash"},
        {"path": "/usr/bin/perl", "kind": "regular", "mode": 0o755, "data": b"perl binary"},
        {"path": "/bin", "kind": "symlink", "target": "usr/bin"},
        {"path": "/etc", "kind": "directory"},
        {"path": "/etc/hosts", "kind": "regular", "mode": 0o644, "data": b"127.0.0.1 localhost\n"},
        {"path": "/opt", "kind": "directory"},
        {"path": "/opt/tool", "kind": "regular", "mode": 0o755, "data": b"not in search dirs"},
    ]
    members.extend(extra)
    return members


# --- synthetic ELF builder ----------------------------------------------------

_DT_NEEDED = 1
_DT_STRTAB = 5
_DT_STRSZ = 10
_DT_RPATH = 15
_DT_RUNPATH = 29


def make_elf(
    needed=(),
    interp=None,
    rpath=None,
    runpath=None,
    elf_class=64,
    little_endian=True,
    dynamic=True,
    filler=b"",
) -> bytes:
    """Minimal valid ELF with the given dynamic-linking facts."""
    end = "<" if little_endian else ">"
    is64 = elf_class == 64
    ehsize = 64 if is64 else 52
    phentsize = 56 if is64 else 32
    dyn_entry_size = 16 if is64 else 8
    vbase = 0x400000

    strtab = bytearray(b"\x00")

    def add_str(s: str) -> int:
        off = len(strtab)
        strtab.extend(s.encode() + b"\x00")
        return off

    needed_offs = [add_str(n) for n in needed]
    rpath_off = add_str(rpath) if rpath else None
    runpath_off = add_str(runpath) if runpath else None

    dyn_entries = [(_DT_NEEDED, off) for off in needed_offs]
    if rpath_off is not None:
        dyn_entries.append((_DT_RPATH, rpath_off))
    if runpath_off is not None:
        dyn_entries.append((_DT_RUNPATH, runpath_off))

    interp_bytes = (interp.encode() + b"\x00") if interp else b""
    phnum = 1 + (1 if dynamic else 0) + (1 if interp else 0)
    off_interp = ehsize + phnum * phentsize
    off_dyn = off_interp + len(interp_bytes)
    n_dyn = (len(dyn_entries) + 3) if dynamic else 0  # + STRTAB, STRSZ, NULL
    off_strtab = off_dyn + n_dyn * dyn_entry_size
    total = off_strtab + len(strtab) + len(filler)

    def phdr(p_type, offset, size) -> bytes:
        if is64:
            return struct.pack(end + "IIQQQQQQ", p_type, 5, offset, vbase + offset, vbase + offset, size, size, 0x1000)
        return struct.pack(end + "IIIIIIII", p_type, offset, vbase + offset, vbase + offset, size, size, 5, 0x1000)

    phdrs = [phdr(1, 0, total)]  # PT_LOAD over the whole file
    if interp:
        phdrs.append(phdr(3, off_interp, len(interp_bytes)))
    if dynamic:
        phdrs.append(phdr(2, off_dyn, n_dyn * dyn_entry_size))

    dyn = bytearray()
    if dynamic:
        fmt = end + ("qQ" if is64 else "iI")
        for tag, val in dyn_entries:
            dyn += struct.pack(fmt, tag, val)
        dyn += struct.pack(fmt, _DT_STRTAB, vbase + off_strtab)
        dyn += struct.pack(fmt, _DT_STRSZ, len(strtab))
        dyn += struct.pack(fmt, 0, 0)

    ident = b"\x7fELF" + bytes([2 if is64 else 1, 1 if little_endian else 2, 1, 0]) + b"\x00" * 8
    if is64:
        ehdr = ident + struct.pack(
            end + "HHIQQQIHHHHHH", 3, 0x3E, 1, vbase, 64, 0, 0, 64, phentsize, phnum, 0, 0, 0
        )
    else:
        ehdr = ident + struct.pack(
            end + "HHIIIIIHHHHHH", 3, 0x03, 1, vbase, 52, 0, 0, 52, phentsize, phnum, 0, 0, 0
        )

    out = ehdr + b"".join(phdrs) + interp_bytes + bytes(dyn) + bytes(strtab) + filler
    assert len(out) == total
    return out


# --- flatten oracle -----------------------------------------------------------


def sequential_apply_oracle(layer_tars, dest: str) -> None:
    """Apply layers to a scratch directory the way a runtime would."""
    os.umask(0o022)
    for data in layer_tars:
        with tarfile.open(fileobj=io.BytesIO(data)) as tf:
            members = tf.getmembers()
            for m in members:
                base = posixpath.basename(m.name.rstrip("/"))
                parent = os.path.join(dest, posixpath.dirname(m.name.rstrip("/")))
                if base == ".wh..wh..opq":
                    if os.path.isdir(parent):
                        for child in os.listdir(parent):
                            full = os.path.join(parent, child)
                            if os.path.isdir(full) and not os.path.islink(full):
                                shutil.rmtree(full)
                            else:
                                os.unlink(full)
                elif base.startswith(".wh."):
                    target = os.path.join(parent, base[len(".wh."):])
                    if os.path.lexists(target):
                        if os.path.isdir(target) and not os.path.islink(target):
                            shutil.rmtree(target)
                        else:
                            os.unlink(target)
            for m in members:
                base = posixpath.basename(m.name.rstrip("/"))
                if base.startswith(".wh."):
                    continue
                target = os.path.join(dest, m.name)
                if os.path.lexists(target):
                    existing_dir = os.path.isdir(target) and not os.path.islink(target)
                    if existing_dir and not m.isdir():
                        shutil.rmtree(target)
                    elif not existing_dir and not (m.isdir() and existing_dir):
                        os.unlink(target)
                tf.extract(m, dest)


def snapshot_dir(dest: str) -> dict:
    """Map of the scratch directory: path -> (kind, mode, payload)."""
    out = {}
    for root, dirs, files in os.walk(dest):
        for name in dirs + files:
            full = os.path.join(root, name)
            rel = "/" + os.path.relpath(full, dest).replace(os.sep, "/")
            st = os.lstat(full)
            mode = st.st_mode & 0o7777
            if os.path.islink(full):
                out[rel] = ("symlink", None, os.readlink(full))
            elif os.path.isdir(full):
                out[rel] = ("directory", mode, None)
            else:
                with open(full, "rb") as fh:
                    out[rel] = ("regular", mode, fh.read())
    return out


def flattened_snapshot(rootfs) -> dict:
    """The flattened model in the oracle's snapshot shape."""
    out = {}
    for path, rec in rootfs.entries.items():
        if rec.kind == "symlink":
            out[path] = ("symlink", None, rec.link_target)
        elif rec.kind == "directory":
            out[path] = ("directory", rec.mode & 0o7777, None)
        elif rec.kind == "regular":
            out[path] = ("regular", rec.mode & 0o7777, rootfs.data_for(path))
        else:
            out[path] = (rec.kind, rec.mode & 0o7777, rec.link_target)
    return out


# --- naive symlink resolution oracle -------------------------------------------


def oracle_lookup(entries: dict, path: str, depth: int = 0):
    """Entry key that a spelling denotes, ancestors resolved. None on loops.

    ``entries`` is raw ground truth: path -> {"kind", "target"} dicts.
    """
    if depth > 80:
        return None
    if path == "/" or path == "":
        return "/"
    parent, _, base = path.rpartition("/")
    parent_phys = oracle_follow(entries, parent or "/", depth + 1)
    if parent_phys is None:
        return None
    if base == ".":
        return parent_phys
    if base == "..":
        return posixpath.dirname(parent_phys) or "/"
    return posixpath.join(parent_phys, base)


def oracle_follow(entries: dict, path: str, depth: int = 0):
    """Like oracle_lookup but also follows the final component to its entry."""
    if depth > 80:
        return None
    key = oracle_lookup(entries, path, depth + 1)
    hops = 0
    while key is not None and entries.get(key, {}).get("kind") == "symlink":
        hops += 1
        if hops > 80:
            return None
        target = entries[key]["target"]
        if not target.startswith("/"):
            target = posixpath.normpath(posixpath.join(posixpath.dirname(key), target))
        key = oracle_lookup(entries, target, depth + 1)
    return key


def oracle_one_hop(entries: dict, spelling: str):
    """One resolution step of a spelling, or None when it is not a symlink."""
    key = oracle_lookup(entries, spelling)
    if key is None:
        return None
    rec = entries.get(key)
    if rec is None or rec.get("kind") != "symlink":
        return None
    target = rec["target"]
    if not target.startswith("/"):
        target = posixpath.normpath(posixpath.join(posixpath.dirname(key), target))
    return target


def oracle_walk(entries: dict, start: str) -> list[str]:
    """Iterated one-hop resolution from a path spelling; stops before revisits."""
    seq = [start]
    seen = {start}
    current = start
    while True:
        key = oracle_lookup(entries, current)
        if key is None or key not in entries:
            return seq  # dangling terminal
        if entries[key]["kind"] != "symlink":
            return seq
        nxt = oracle_one_hop(entries, current)
        if nxt is None or nxt in seen:
            return seq
        seq.append(nxt)
        seen.add(nxt)
        current = nxt
    return seq


def oracle_alias_closure(entries: dict, initial_paths) -> set:
    """All spellings reachable by substituting one ancestor per step.

    An ancestor that is a symlink entry substitutes to its target; an
    ancestor that is the target of symlink entries substitutes to each
    source. Spellings must denote an existing non-directory.
    """
    links = {
        path: (
            rec["target"]
            if rec["target"].startswith("/")
            else posixpath.normpath(posixpath.join(posixpath.dirname(path), rec["target"]))
        )
        for path, rec in entries.items()
        if rec.get("kind") == "symlink"
    }
    seen = set(initial_paths)
    frontier = list(initial_paths)
    while frontier:
        p = frontier.pop()
        ancestors = []
        d = posixpath.dirname(p)
        while d and d != "/":
            ancestors.append(d)
            d = posixpath.dirname(d)
        for d in ancestors:
            subs = []
            if d in links:
                subs.append(links[d])
            else:
                subs.extend(src for src, t in links.items() if t == d)
            for r in subs:
                q = r + p[len(d):]
                if q == p or q in seen:
                    continue
                key = oracle_lookup(entries, q)
                if key is None or key not in entries or entries[key]["kind"] == "directory":
                    continue
                seen.add(q)
                frontier.append(q)
    return seen


def oracle_command_start(entries: dict, name: str, search_dirs) -> str | None:
    """Where a bare command name lands: physical search dirs first, alias
    directories as a fallback (mirrors the documented lookup contract)."""
    fallback = None
    for d in search_dirs:
        rec = entries.get(d)
        cand = d + "/" + name
        if rec is not None and rec["kind"] == "symlink":
            if fallback is None:
                key = oracle_lookup(entries, cand)
                if key is not None and key in entries:
                    fallback = key
            continue
        if cand in entries:
            return cand
    return fallback


# --- random symlink forest generator -------------------------------------------


def random_symlink_rootfs(rng) -> tuple[dict, list[str]]:
    """Ground-truth entries for a random rootfs with symlink chains <= 6 hops,
    including injected cycles, dangling targets, and alias directories.

    Returns (entries, command_names); entries is path -> {kind, mode, target,
    data} and is the oracle's source of truth.
    """
    entries = {
        "/usr": {"kind": "directory", "mode": 0o755},
        "/usr/bin": {"kind": "directory", "mode": 0o755},
        "/usr/sbin": {"kind": "directory", "mode": 0o755},
        "/data": {"kind": "directory", "mode": 0o755},
    }
    alias_of: dict[str, str] = {}
    if rng.random() < 0.6:
        entries["/bin"] = {"kind": "symlink", "mode": 0o777, "target": rng.choice(["usr/bin", "/usr/bin"])}
        alias_of["/usr/bin"] = "/bin"
    else:
        entries["/bin"] = {"kind": "directory", "mode": 0o755}
    if rng.random() < 0.4:
        entries["/sbin"] = {"kind": "symlink", "mode": 0o777, "target": "/usr/sbin"}
        alias_of["/usr/sbin"] = "/sbin"
    else:
        entries["/sbin"] = {"kind": "directory", "mode": 0o755}

    real_dirs = [d for d in ("/bin", "/sbin", "/usr/bin", "/usr/sbin") if entries[d]["kind"] == "directory"]

    def add_file(path: str) -> None:
        entries[path] = {"kind": "regular", "mode": 0o755, "data": b"x" * rng.randrange(1, 16)}

    commands = []
    for i in range(rng.randrange(1, 16)):
        name = f"cmd{i}"
        commands.append(name)
        home = rng.choice(real_dirs)
        first = home + "/" + name
        hops = rng.randrange(0, 6)
        if hops == 0:
            add_file(first)
            continue
        fate = rng.random()
        cur = first
        for h in range(hops):
            is_last = h == hops - 1
            if is_last and fate < 0.10:
                entries[cur] = {"kind": "symlink", "mode": 0o777, "target": f"/missing/gone{i}"}
                break
            if is_last and fate < 0.20 and h >= 1:
                entries[cur] = {"kind": "symlink", "mode": 0o777, "target": first}
                break
            nxt_dir = rng.choice(real_dirs)
            nxt = f"{nxt_dir}/t{i}_{h}"
            spellings = [nxt]
            if nxt_dir in alias_of:
                spellings.append(alias_of[nxt_dir] + "/" + posixpath.basename(nxt))
            if nxt_dir == posixpath.dirname(cur):
                spellings.append(posixpath.basename(nxt))
            entries[cur] = {"kind": "symlink", "mode": 0o777, "target": rng.choice(spellings)}
            if is_last:
                add_file(nxt)
            cur = nxt

    for j in range(rng.randrange(0, 4)):
        entries[f"/data/extra{j}"] = {
            "kind": "regular",
            "mode": rng.choice([0o644, 0o755]),
            "data": b"d",
        }
    return entries, commands


def rootfs_from_ground_truth(entries: dict):
    """Materialize raw ground truth into a FlattenedRootfs."""
    from staticslim.imageio import FileRecord, FlattenedRootfs

    records = {}
    content = {}
    for path in sorted(entries):
        g = entries[path]
        data = g.get("data", b"")
        records[path] = FileRecord(
            path=path,
            kind=g["kind"],
            mode=g.get("mode", 0o755),
            size=len(data) if g["kind"] == "regular" else 0,
            link_target=g.get("target"),
        )
        if g["kind"] == "regular":
            content[path] = data
    total = sum(r.size for r in records.values() if r.kind == "regular")
    return FlattenedRootfs(entries=records, content=content, total_size=total)


@pytest.fixture
def shell_rootfs():
    from staticslim.imageio import flatten_layers

    return flatten_layers(make_stack([make_layer_tar(shell_chain_members())]))
