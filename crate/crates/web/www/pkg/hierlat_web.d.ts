/* tslint:disable */
/* eslint-disable */

/**
 * Synthetic test series scored by the mean-deviation baseline, for picking
 * thresholds interactively.
 */
export class Explorer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[precision, recall, f1, threshold]` at the best threshold.
     */
    best(adjusted: boolean): Float64Array;
    /**
     * `[precision, recall, f1, tp, fp, fn]`
     */
    evaluate(threshold: number, adjusted: boolean): Float64Array;
    labels(): Uint8Array;
    constructor(seed: number);
    predictions(threshold: number, adjusted: boolean): Uint8Array;
    scores(): Float64Array;
}

export function demoShape(): Uint32Array;

export function occlusionMask(features: number, len: number, r: number, p: number, seed: number): Uint8Array;

export function perturb(level: number, index: number, delta: number, seed: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_explorer_free: (a: number, b: number) => void;
    readonly demoShape: () => [number, number];
    readonly explorer_best: (a: number, b: number) => [number, number, number, number];
    readonly explorer_evaluate: (a: number, b: number, c: number) => [number, number, number, number];
    readonly explorer_labels: (a: number) => [number, number];
    readonly explorer_new: (a: number) => [number, number, number];
    readonly explorer_predictions: (a: number, b: number, c: number) => [number, number, number, number];
    readonly explorer_scores: (a: number) => [number, number];
    readonly occlusionMask: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly perturb: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
