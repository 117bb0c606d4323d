/* tslint:disable */
/* eslint-disable */

/**
 * gMAD between a model that tracks MOS up to `noise_a` and one that tracks
 * it up to `noise_b`, on `n` videos.
 */
export function gmad_demo(seed: number, n: number, noise_a: number, noise_b: number, levels: number, tolerance: number): string;

/**
 * Pairwise probability and both ranking losses as functions of the score
 * gap `g(x) - g(y)` over `[-range, range]`.
 */
export function loss_curves(range: number, steps: number): string;

/**
 * A 2-D pool of `n` videos (one frame each) in a few clusters, with
 * difficulty peaking in one corner, selected greedily with weight `lambda`.
 */
export function selection_demo(seed: number, n: number, lambda: number, budget: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly gmad_demo: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly loss_curves: (a: number, b: number) => [number, number, number, number];
    readonly selection_demo: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
