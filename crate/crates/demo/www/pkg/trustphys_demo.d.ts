/* tslint:disable */
/* eslint-disable */

/**
 * One simulated participant held on the JavaScript side.
 */
export class DemoSession {
    free(): void;
    [Symbol.dispose](): void;
    eda(start: number, length: number): string;
    fixations(start: number, length: number, dispersion: number, min_duration: number): string;
    /**
     * `config_json` is a cohort configuration (empty for defaults);
     * `condition` is `control`, `fa` or `miss`.
     */
    constructor(config_json: string, condition: string, seed: bigint);
    summary(): string;
}

export function trustTrajectories(config_json: string, step_s: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demosession_free: (a: number, b: number) => void;
    readonly demosession_eda: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demosession_fixations: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly demosession_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly demosession_summary: (a: number) => [number, number];
    readonly trustTrajectories: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
